#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_dlist_push_front_path2_empty_list(void)
{
    struct dlist *l = dlist_create();
    TEST_ASSERT_EQUAL_INT(0, dlist_push_front(l, 5));
    TEST_ASSERT_EQUAL_PTR(l->head, l->tail);
    TEST_ASSERT_EQUAL_INT(5, l->head->value);
    dlist_destroy(l);
}
