#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_dlist_push_front_path1_non_empty_list(void)
{
    struct dlist *l = dlist_create();
    TEST_ASSERT_EQUAL_INT(0, dlist_push_front(l, 1));
    TEST_ASSERT_EQUAL_INT(0, dlist_push_front(l, 2));
    TEST_ASSERT_EQUAL_INT(2, l->head->value);
    TEST_ASSERT_EQUAL_PTR(l->head, l->head->next->prev);
    TEST_ASSERT_EQUAL_INT(1, l->tail->value);
    TEST_ASSERT_EQUAL_size_t(2, l->length);
    dlist_destroy(l);
}
