#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_dlist_pop_front_path4_discard_last_node(void)
{
    struct dlist *l = dlist_create();
    dlist_push_back(l, 9);
    TEST_ASSERT_EQUAL_INT(0, dlist_pop_front(l, NULL));
    TEST_ASSERT_NULL(l->head);
    TEST_ASSERT_NULL(l->tail);
    dlist_destroy(l);
}
