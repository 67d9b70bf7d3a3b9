#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_dlist_remove_path4_head_node(void)
{
    struct dlist *l = dlist_create();
    dlist_push_back(l, 1);
    dlist_push_back(l, 2);
    TEST_ASSERT_EQUAL_INT(0, dlist_remove(l, l->head));
    TEST_ASSERT_EQUAL_PTR(l->tail, l->head);
    TEST_ASSERT_NULL(l->head->prev);
    dlist_destroy(l);
}
